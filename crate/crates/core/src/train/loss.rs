use crate::data::Label;
use crate::Real;

/// `max(z, 0) - z*y + ln(1 + exp(-|z|))`.
pub fn bce_with_logits<T: Real>(logit: T, label: Label) -> T {
    let y = label.target::<T>();
    logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p()
}
