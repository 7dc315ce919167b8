fn main() {
    std::process::exit(extrude3d::run_command(std::env::args_os()));
}
