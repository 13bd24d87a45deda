fn main() {
    std::process::exit(branchstat::cli::run(std::env::args_os()));
}
