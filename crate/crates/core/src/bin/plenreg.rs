fn main() {
    std::process::exit(plenreg::cli::run(std::env::args_os()));
}
