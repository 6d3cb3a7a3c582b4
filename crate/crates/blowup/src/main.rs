use clap::Parser;

fn main() {
    let args = blowup::cli::Args::parse();
    std::process::exit(blowup::cli::run(&args));
}
