fn main() {
    std::process::exit(advids::cli::main(std::env::args_os()));
}
