use crate::attacks::{eval_losses, sample_losses, AttackData, AttackTarget, EvalSet, ScoredDecisions};
use crate::error::{Error, Result};

/// Mean loss over the known members.
pub fn yeom_threshold(known_losses: &[f64]) -> Result<f64> {
    if known_losses.is_empty() {
        return Err(Error::data("Yeom threshold needs at least one known member"));
    }
    Ok(known_losses.iter().sum::<f64>() / known_losses.len() as f64)
}

/// Loss-threshold attack: member iff the sample's loss is strictly below the
/// mean loss of the known members. Scores are negated losses.
pub fn yeom_attack(target: &AttackTarget<'_>, data: &AttackData<'_>, eval: &EvalSet) -> Result<ScoredDecisions> {
    let known = sample_losses(target.params, target.rate, data.train, &eval.known)?;
    let nu = yeom_threshold(&known)?;
    let losses = eval_losses(target.params, target.rate, data, eval)?;
    Ok(ScoredDecisions {
        decisions: losses.iter().map(|&l| l < nu).collect(),
        scores: losses.iter().map(|&l| -l).collect(),
        labels: eval.labels(),
        threshold: Some(nu),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_mean() {
        let nu = yeom_threshold(&[0.1, 0.3]).unwrap();
        assert!((nu - 0.2).abs() < 1e-15);
        assert!(0.15 < nu);
        // equality is not membership
        assert!(!(nu < nu));
        assert!(yeom_threshold(&[]).is_err());
    }
}
