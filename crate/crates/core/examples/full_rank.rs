//! Monte Carlo estimate of how often a wide Gaussian matrix has full row rank.
use attncond::linalg::DEFAULT_RANK_TOL;
use attncond::rmt::full_rank_probability;

fn main() -> attncond::Result<()> {
    for (rows, cols) in [(8, 8), (32, 64), (32, 1024)] {
        let p = full_rank_probability(rows, cols, 200, 0, DEFAULT_RANK_TOL)?;
        println!("{rows}x{cols}: full rank in {:.1}% of 200 draws", p * 100.0);
    }
    Ok(())
}
