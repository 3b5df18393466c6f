fn main() {
    std::process::exit(nlmg::cli::run(std::env::args_os()));
}
