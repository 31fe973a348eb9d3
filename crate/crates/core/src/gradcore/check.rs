use super::{GradError, Graph, Tensor, Var};

/// Central-difference gradient of a plain scalar function.
pub fn central_difference<F>(f: F, x: &Tensor, step: f64) -> Result<Tensor, GradError>
where
    F: Fn(&Tensor) -> Result<f64, GradError>,
{
    if !(step > 0.0) {
        return Err(GradError::InvalidStep(step));
    }
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let hi = f(&probe).map_err(|_| GradError::NonFiniteProbe { coordinate: i })?;
        probe.data_mut()[i] = orig - step;
        let lo = f(&probe).map_err(|_| GradError::NonFiniteProbe { coordinate: i })?;
        probe.data_mut()[i] = orig;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(GradError::NonFiniteProbe { coordinate: i });
        }
        grad.data_mut()[i] = (hi - lo) / (2.0 * step);
    }
    Ok(grad)
}

/// Maximum per-coordinate relative error between the reverse-mode gradient
/// of `f` at `x` and its central-difference estimate:
/// `max_i |g_fd − g_ad| / (|g_fd| + |g_ad| + 1e-12)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64, GradError>
where
    F: Fn(&mut Graph, Var) -> Result<Var, GradError>,
{
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let root = f(&mut g, xv)?;
    let ad = g.grad(root, &[xv])?.remove(0);
    let fd = central_difference(
        |p| {
            let mut g = Graph::new();
            let xv = g.constant(p.clone());
            let root = f(&mut g, xv)?;
            Ok(g.value(root).item())
        },
        x,
        step,
    )?;
    Ok(ad
        .data()
        .iter()
        .zip(fd.data())
        .map(|(a, d)| (d - a).abs() / (d.abs() + a.abs() + 1e-12))
        .fold(0.0, f64::max))
}
