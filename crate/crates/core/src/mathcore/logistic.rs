use super::Real;

/// Logistic link `1 / (1 + e^{-u})`, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// Derivative of the logistic link, `σ(u)(1 − σ(u))`. Symmetric in `u`, peak 1/4 at 0.
#[inline]
pub fn sigmoid_prime<T: Real>(u: T) -> T {
    // Evaluate at -|u| so both factors stay well conditioned.
    let s = sigmoid(-u.abs());
    s * (T::one() - s)
}

/// `log σ(u)`, stable for large negative arguments.
#[inline]
pub fn log_sigmoid<T: Real>(u: T) -> T {
    -softplus(-u)
}

/// `log(1 + e^u)`.
#[inline]
pub fn softplus<T: Real>(u: T) -> T {
    u.max(T::zero()) + (-u.abs()).exp().ln_1p()
}
