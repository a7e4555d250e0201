fn main() {
    std::process::exit(optoscatter::cli::main_entry(std::env::args_os()));
}
