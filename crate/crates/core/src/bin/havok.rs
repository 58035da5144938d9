fn main() {
    std::process::exit(havok_core::cli::run());
}
