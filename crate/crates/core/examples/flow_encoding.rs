//! Quantize a flow field to bytes, stack ten fields into a 20-channel input
//! and mirror it.

use twostream::augment::{flip_input, InputKind};
use twostream::flow::{build_stack, dequantize_flow, quantize_flow, FlowField, DEFAULT_BOUND, STACK_FRAMES};
use twostream::{Result, Tensor};

fn main() -> Result<()> {
    let field = FlowField::new(
        Tensor::from_fn(&[4, 6], |i| (i % 6) as f64 * 2.0 - 5.0),
        Tensor::full(&[4, 6], -1.5),
    )?;
    let (u, v) = quantize_flow(&field, DEFAULT_BOUND)?;
    println!("u row 0 quantized: {:?}", &u.data()[..6]);
    let back = dequantize_flow(&u, &v, DEFAULT_BOUND)?;
    println!(
        "round-trip error {:.4} (bound {:.4})",
        back.u.max_abs_diff(&field.u).max(back.v.max_abs_diff(&field.v)),
        2.0 * DEFAULT_BOUND / 255.0
    );

    let fields = vec![field; STACK_FRAMES];
    let stack = build_stack(&fields, DEFAULT_BOUND, 0)?;
    let flipped = flip_input(&stack.data, InputKind::FlowStack)?;
    println!("stack {:?}", stack.data.shape());
    println!("u row 0 after flip: {:?}", &flipped.data()[..6]);
    Ok(())
}
