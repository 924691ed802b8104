fn main() {
    std::process::exit(nonlocal_lab::cli::run());
}
