fn main() {
    lidar_units::cli::init_logging();
    std::process::exit(lidar_units::cli::main_with_args(std::env::args_os()));
}
