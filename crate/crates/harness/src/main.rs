fn main() {
    env_logger::init();
    let code = seqtransfer_harness::cli::run(std::env::args_os());
    std::process::exit(code);
}
