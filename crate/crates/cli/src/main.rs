fn main() {
    std::process::exit(slotvid_cli::main_with(std::env::args_os()));
}
