fn main() {
    std::process::exit(chromatic_lll::cli::main());
}
