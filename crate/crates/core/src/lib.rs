//! ARIMA-based anomaly detection and repair for sensor streams collected at a
//! sink.

pub mod anomaly;
pub mod arima;
pub mod cli;
pub mod simulate;
pub mod sink;
pub mod timeseries;
