//! Parameter breakdown of ViT-B and the cost of trading depth for heads.
use attncond::planner::{count_params, tradeoff_table, ArchSpec, WidthMode};

fn main() -> attncond::Result<()> {
    let base = ArchSpec::vit_base();
    let b = count_params(&base)?;
    println!("ViT-B: {} parameters ({} in one block)", b.total, b.per_layer.total());
    for mode in [WidthMode::ScaleEmbed, WidthMode::DecoupledAttention] {
        println!("{mode:?}");
        for row in tradeoff_table(&base, &[6, 8], &[12, 16], mode)? {
            println!(
                "  depth {:>2} heads {:>2} D {:>4} total {:>11} ({:+.2}%)",
                row.depth, row.heads, row.embed_dim, row.total_params, row.delta_vs_base_percent
            );
        }
    }
    Ok(())
}
