fn main() {
    std::process::exit(sgito::cli::run());
}
