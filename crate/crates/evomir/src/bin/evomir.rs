fn main() {
    std::process::exit(evomir::cli::main_entry());
}
