fn main() {
    std::process::exit(pmlp_cli::run(std::env::args_os()));
}
