fn main() {
    std::process::exit(deadbeat::cli::run(std::env::args_os()));
}
