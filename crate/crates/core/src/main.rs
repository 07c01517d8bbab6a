fn main() {
    std::process::exit(explabox::cli::run(std::env::args_os()));
}
