fn main() {
    std::process::exit(parmin::cli_main());
}
