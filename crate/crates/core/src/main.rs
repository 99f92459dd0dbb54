fn main() {
    std::process::exit(engage::cli::main());
}
