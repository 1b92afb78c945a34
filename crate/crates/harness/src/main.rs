fn main() {
    std::process::exit(ldprlhf_harness::cli::run_from(std::env::args_os()));
}
