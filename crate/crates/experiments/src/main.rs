fn main() {
    std::process::exit(steerdist::cli::main_with(std::env::args_os()));
}
