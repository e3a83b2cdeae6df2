//! Tour of the hypergrid environment: the reward plateaus, the mode band,
//! and the exact reward distribution R(x)/Z.
//!
//! ```bash
//! cargo run --release --example hypergrid_tour
//! ```

use gridflow::{GridState, Hypergrid, RewardParams};

fn main() -> gridflow::Result<()> {
    let env = Hypergrid::new(2, 8)?;
    let rp = RewardParams::new(1e-3, 0.5, 2.0)?;

    println!("2D hypergrid, H = 8, rewards R0=1e-3 R1=0.5 R2=2\n");
    println!("reward landscape (rows are x1 = 0..7, columns x0 = 0..7):");
    for x1 in 0..8 {
        let row: Vec<String> = (0..8)
            .map(|x0| {
                let s = GridState::new(vec![x0, x1]);
                let mark = if env.is_mode(&s) { "*" } else { " " };
                format!("{:5.3}{}", env.reward(&s, &rp), mark)
            })
            .collect();
        println!("  {}", row.join(" "));
    }
    println!("  (* marks the modes: every coordinate in the 0.3 < |x/H - 0.5| < 0.4 band)\n");

    let dist = env.true_distribution(&rp)?;
    println!("partition Z = {:.4}", dist.z());
    let mode_mass: f64 = (0..env.num_states()?)
        .filter(|&i| env.is_mode(&env.index_state(i)))
        .map(|i| dist.probs()[i])
        .sum();
    println!("probability mass on the modes: {:.3}", mode_mass);

    for ndim in [2usize, 4, 6] {
        let env = Hypergrid::new(ndim, 8)?;
        println!(
            "n = {}: {} states, {} modes, mode coordinates {:?}",
            ndim,
            env.num_states()?,
            env.mode_count(),
            env.mode_coords()
        );
    }
    Ok(())
}
