fn main() {
    std::process::exit(jdrdl_cli::run(std::env::args_os()));
}
