//! Reverse-mode gradients on the tape, checked against central differences,
//! then a few AdamW steps fitting a line.

use hydrogat::tensor::{AdamW, AdamWConfig, ParamTable, Tape, Tensor};
use hydrogat::Result;

fn loss_at(w: &Tensor, x: &Tensor, y: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let pred = tape.constant(x.clone()).matmul(tape.constant(w.clone()))?.tanh();
    Ok(pred.sub(tape.constant(y.clone()))?.mul(pred.sub(tape.constant(y.clone()))?)?.mean().value().data()[0])
}

fn main() -> Result<()> {
    let x = Tensor::new(vec![4, 2], vec![0.1, 1.0, 0.5, -0.3, -0.8, 0.2, 0.9, 0.4])?;
    let y = Tensor::new(vec![4, 1], vec![0.3, 0.1, -0.5, 0.7])?;
    let w = Tensor::new(vec![2, 1], vec![0.2, -0.1])?;

    let tape = Tape::new();
    let wv = tape.param(w.clone());
    let err = tape.constant(x.clone()).matmul(wv)?.tanh().sub(tape.constant(y.clone()))?;
    let grads = tape.backward(err.mul(err)?.mean())?;
    let analytic = grads.get(wv).expect("parameter gradient").clone();
    for i in 0..2 {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += 1e-6;
        down.data_mut()[i] -= 1e-6;
        let numeric = (loss_at(&up, &x, &y)? - loss_at(&down, &x, &y)?) / 2e-6;
        println!("dL/dw{i}: tape {:.9} finite difference {numeric:.9}", analytic.data()[i]);
    }

    let mut params = ParamTable::new();
    params.insert("w", w);
    let mut opt = AdamW::new(AdamWConfig::default(), &params);
    for step in 0..=200 {
        let tape = Tape::new();
        let p = params.bind(&tape);
        let err = tape.constant(x.clone()).matmul(p.get("w")?)?.tanh().sub(tape.constant(y.clone()))?;
        let loss = err.mul(err)?.mean();
        if step % 50 == 0 {
            println!("step {step}: loss {:.6}", loss.value().data()[0]);
        }
        let g = p.gradients(&tape.backward(loss)?);
        opt.step(&mut params, &g)?;
    }
    Ok(())
}
