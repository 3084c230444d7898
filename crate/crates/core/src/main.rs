fn main() {
    std::process::exit(skewwarp::cli::main_with(std::env::args_os()));
}
