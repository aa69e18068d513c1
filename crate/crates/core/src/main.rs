fn main() {
    let outcome = entropyforge::runner::run(std::env::args_os());
    if let Some(csv) = &outcome.csv {
        println!("{}", csv.display());
    }
    std::process::exit(outcome.exit_code);
}
