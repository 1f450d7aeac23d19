//! Condition number of concatenated Gaussian head blocks as the head count grows,
//! next to the closed-form large-width value.
use attncond::rmt::{head_concat_sweep, SweepSpec};

fn main() -> attncond::Result<()> {
    let spec = SweepSpec::new(32, 16, vec![1, 2, 4, 8, 16, 32, 64], 50, 1);
    println!("{:>4} {:>6} {:>12} {:>10} {:>12}", "h", "D", "mean kappa", "std", "closed form");
    for s in head_concat_sweep(&spec)? {
        let closed = s.asymptotic_kappa.map_or("-".to_string(), |k| format!("{k:.4}"));
        println!("{:>4} {:>6} {:>12.4} {:>10.4} {:>12}", s.h, s.embed_dim, s.mean_kappa, s.std_kappa, closed);
    }
    Ok(())
}
