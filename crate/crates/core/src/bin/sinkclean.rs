fn main() {
    std::process::exit(sinkclean::cli::main_with_args(std::env::args_os()));
}
