fn main() {
    std::process::exit(ldo_bench_cli::run(std::env::args_os()));
}
