fn main() {
    std::process::exit(solid_bandit::harness::cli_run(std::env::args_os()));
}
