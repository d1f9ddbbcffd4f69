fn main() {
    std::process::exit(vimguard::cli::main());
}
