fn main() {
    eprintln!("vacone: command-line interface under construction");
    std::process::exit(2);
}
