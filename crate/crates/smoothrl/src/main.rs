fn main() {
    std::process::exit(smoothrl::cli::run());
}
