/// One classical fourth-order Runge–Kutta step of `ẋ = rhs(t, x)`.
pub fn rk4_step(rhs: impl Fn(f64, &[f64]) -> Vec<f64>, t: f64, x: &[f64], dt: f64) -> Vec<f64> {
    let axpy = |base: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, ki)| b + s * ki).collect()
    };
    let k1 = rhs(t, x);
    let k2 = rhs(t + 0.5 * dt, &axpy(x, &k1, 0.5 * dt));
    let k3 = rhs(t + 0.5 * dt, &axpy(x, &k2, 0.5 * dt));
    let k4 = rhs(t + dt, &axpy(x, &k3, dt));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
