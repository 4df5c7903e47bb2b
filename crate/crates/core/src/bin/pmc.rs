fn main() {
    std::process::exit(pmc_core::cli::run(std::env::args_os()));
}
