fn main() {
    std::process::exit(recurpred_cli::run(std::env::args_os()));
}
