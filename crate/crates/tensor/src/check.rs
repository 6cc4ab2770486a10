//! Central finite differences, for checking tape gradients.

use ndarray::ArrayD;

use crate::{Float, ParamStore};

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for the flat index `i` of parameter
/// `name`. The store is restored before returning.
pub fn central_difference<T, F>(store: &mut ParamStore<T>, name: &str, index: usize, h: f64, mut f: F) -> f64
where
    T: Float,
    F: FnMut(&ParamStore<T>) -> f64,
{
    let original = element(store, name, index);
    set_element(store, name, index, original + T::of(h));
    let up = f(store);
    set_element(store, name, index, original - T::of(h));
    let down = f(store);
    set_element(store, name, index, original);
    (up - down) / (2.0 * h)
}

/// Same as [`central_difference`] for a free input array.
pub fn central_difference_input<T, F>(x: &mut ArrayD<T>, index: usize, h: f64, mut f: F) -> f64
where
    T: Float,
    F: FnMut(&ArrayD<T>) -> f64,
{
    fn slot<T>(x: &mut ArrayD<T>, index: usize) -> &mut T {
        x.iter_mut().nth(index).expect("index in range")
    }
    let original = *slot(x, index);
    *slot(x, index) = original + T::of(h);
    let up = f(x);
    *slot(x, index) = original - T::of(h);
    let down = f(x);
    *slot(x, index) = original;
    (up - down) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero gradients
/// from producing meaningless ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn element<T: Float>(store: &ParamStore<T>, name: &str, index: usize) -> T {
    *store
        .value(name)
        .unwrap_or_else(|| panic!("no parameter {name:?}"))
        .iter()
        .nth(index)
        .expect("index in range")
}

fn set_element<T: Float>(store: &mut ParamStore<T>, name: &str, index: usize, v: T) {
    let p = store.get_mut(name).unwrap_or_else(|| panic!("no parameter {name:?}"));
    *p.value.iter_mut().nth(index).expect("index in range") = v;
}
