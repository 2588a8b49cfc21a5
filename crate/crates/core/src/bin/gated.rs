fn main() {
    std::process::exit(gated_perceptron::cli::main_with_args(std::env::args_os()));
}
