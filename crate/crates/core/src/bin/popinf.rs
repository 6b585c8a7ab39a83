fn main() {
    std::process::exit(popinf_core::cli::run(std::env::args_os()));
}
