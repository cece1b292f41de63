fn main() {
    println!("frdc");
}
