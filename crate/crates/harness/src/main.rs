fn main() {
    std::process::exit(mwgibbs_harness::cli::run(std::env::args_os()));
}
