fn main() {
    std::process::exit(cbf_cli::run());
}
