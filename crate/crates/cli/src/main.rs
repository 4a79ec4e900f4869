fn main() {
    std::process::exit(spf_lab::main_with(std::env::args_os()));
}
