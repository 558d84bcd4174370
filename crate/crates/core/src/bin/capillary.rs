fn main() {
    std::process::exit(capillary::driver::main_with_args(std::env::args_os()));
}
