fn main() {
    std::process::exit(benignspoof_core::cli::run(std::env::args_os()));
}
