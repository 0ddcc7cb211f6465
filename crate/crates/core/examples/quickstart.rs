use multiknockoff::diag::{solve_diag, DiagMethod};
use multiknockoff::gaussian::{build_conditional, sample_knockoffs};
use multiknockoff::harness::data::{gen_random_correlation, gen_response, sample_gaussian, ResponseKind};
use multiknockoff::importance::{fit_importance, LambdaChoice, ModelKind};
use multiknockoff::linalg::GaussianModel;
use multiknockoff::selection::{select_from_scores, TieMode};

fn main() -> multiknockoff::Result<()> {
    let sigma = gen_random_correlation(30, 1)?;
    let x0 = sample_gaussian(&sigma, 500, 2);
    let (y, truth) = gen_response(&x0, &[0, 5, 9, 14, 20], 5.0, ResponseKind::Linear, 3)?;

    let kappa = 3;
    let diag = solve_diag(&sigma, kappa, DiagMethod::Entropy)?;
    let law = build_conditional(&GaussianModel::centered(sigma), &diag.s, kappa)?;
    let design = sample_knockoffs(&law, &x0, 4)?;

    let scores = fit_importance(&design, &y, ModelKind::LinearLasso, &LambdaChoice::Default, 5)?;
    let result = select_from_scores(&scores, 0.1, 6, TieMode::Random)?;
    println!("selected {:?} (true {:?})", result.selected, truth);
    Ok(())
}
