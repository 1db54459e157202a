fn main() {
    std::process::exit(styleguard::cli::main_with(std::env::args_os()));
}
