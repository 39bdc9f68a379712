fn main() {
    std::process::exit(qvar::cli::run(std::env::args_os()));
}
