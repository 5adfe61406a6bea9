//! Reverse-mode differentiation on the tape: reflection coefficients are
//! stepped up to a filter, the filter shapes a pulse, and the energy of the
//! result is differentiated back to the coefficients.

use tvlp::{Tape, Tensor};

fn main() -> tvlp::Result<()> {
    let mut tape = Tape::<f64>::new();
    let k = tape.leaf(Tensor::new(1, 3, vec![0.5, -0.3, 0.2])?);
    let mut pulse = vec![0.0; 64];
    pulse[0] = 1.0;
    let e = tape.leaf(Tensor::column(pulse));

    let a = tape.reflection_to_lpc(k)?;
    let s = tape.lp_ti(e, a)?;
    let sq = tape.mul(s, s)?;
    let energy = tape.sum(sq)?;
    tape.backward(energy)?;

    println!("impulse-response energy {:.6}", tape.value(energy).item());
    println!("d energy / d k = {:?}", tape.grad_or_zeros(k).data());
    println!("{} nodes recorded", tape.len());
    Ok(())
}
