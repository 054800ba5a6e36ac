//! Flat, versioned TOML representation of a fitted model.
//!
//! ```toml
//! format = "arima-model"
//! version = 1
//! p = 1
//! d = 0
//! q = 0
//! phi = [0.5]
//! theta = []
//! mean = 0.0
//! sigma2 = 1.0
//! aic = 2.0
//! n_train = 200
//! ```

use serde::{Deserialize, Serialize};

use super::{ArimaError, ArimaModel, Result};

pub const DOCUMENT_FORMAT: &str = "arima-model";
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub mean: f64,
    pub sigma2: f64,
    pub aic: f64,
    pub n_train: usize,
}

impl From<&ArimaModel> for ModelDocument {
    fn from(m: &ArimaModel) -> Self {
        Self {
            format: DOCUMENT_FORMAT.to_string(),
            version: DOCUMENT_VERSION,
            p: m.p(),
            d: m.d(),
            q: m.q(),
            phi: m.phi().to_vec(),
            theta: m.theta().to_vec(),
            mean: m.mean(),
            sigma2: m.sigma2(),
            aic: m.aic(),
            n_train: m.n_train(),
        }
    }
}

impl TryFrom<ModelDocument> for ArimaModel {
    type Error = ArimaError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format != DOCUMENT_FORMAT {
            return Err(ArimaError::Document(format!(
                "unexpected format {:?}",
                doc.format
            )));
        }
        if doc.version != DOCUMENT_VERSION {
            return Err(ArimaError::Document(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        if doc.phi.len() != doc.p || doc.theta.len() != doc.q {
            return Err(ArimaError::Document(format!(
                "orders p={} q={} disagree with {} phi and {} theta coefficients",
                doc.p,
                doc.q,
                doc.phi.len(),
                doc.theta.len()
            )));
        }
        ArimaModel::with_aic(
            doc.d,
            doc.phi,
            doc.theta,
            doc.mean,
            doc.sigma2,
            doc.aic,
            doc.n_train,
        )
    }
}

impl ArimaModel {
    pub fn to_toml(&self) -> String {
        toml::to_string(&ModelDocument::from(self)).expect("model document is always serializable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            toml::from_str(text).map_err(|e| ArimaError::Document(e.message().to_string()))?;
        doc.try_into()
    }
}
