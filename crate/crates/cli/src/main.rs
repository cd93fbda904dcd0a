fn main() { println!("{}", fastwave_core::sanity()); }
