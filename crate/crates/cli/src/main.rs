fn main() {
    let args: Vec<String> = std::env::args().collect();
    match gridcheck_cli::run(&args) {
        Ok(output) => {
            print!("{}", output.report.render());
            std::process::exit(output.exit_code);
        }
        Err(clap_error) => clap_error.exit(),
    }
}
