fn main() {
    std::process::exit(tau_lab::cli::run(std::env::args_os()));
}
