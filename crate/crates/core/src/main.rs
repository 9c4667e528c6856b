fn main() {
    std::process::exit(groupoid_mech::cli::main_with_args(std::env::args_os()));
}
