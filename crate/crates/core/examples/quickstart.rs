use crossed::datagen::{gen_mcar, McarOptions};
use crossed::samplers::run_chain;
use crossed::spectral::{numeric_rate, RateOptions};
use crossed::{ModelState, Precisions, SamplerConfig, Scheme, SweepKind};

fn main() -> crossed::Result<()> {
    let tbl = gen_mcar(200, 200, 0.1, 1, &McarOptions::default())?;
    let tau = Precisions::uniform(2, 1.0)?;
    let rep = numeric_rate(SweepKind::Collapsed, &tbl, &tau, &RateOptions::default())?;
    println!("mixing time {:.3}", rep.mixing_numeric);

    let cfg = SamplerConfig::new(Scheme::Cgs, 2_000, 200, 42);
    let chain = run_chain(&cfg, &tbl, &ModelState::zeros(&tbl, tau)?)?;
    for s in &chain.summary().series {
        println!("{} mean {:.3} ESS {:?}", s.label, s.mean, s.ess);
    }
    Ok(())
}
