fn main() {
    std::process::exit(cfsurv::cli::run(std::env::args_os()));
}
