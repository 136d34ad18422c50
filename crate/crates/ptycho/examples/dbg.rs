use ptycho::blind_ptycho::*;
use ptycho::blind_deconv;
use ptycho::measurement::{forward_full, BlindScene};
use ptycho::signal::norm;

fn main() {
    let d = 16;
    let delta = 4;
    let bs = BlindScene::random(d, delta, 3, 42).unwrap();
    let y = forward_full(&bs.scene);
    for &k in &shift_list(d, delta) {
        let model = build_shift_instance(&y, &bs.c, delta, k).unwrap();
        let (h0, x0) = planted_pair(bs.scene.m(), &bs.x_coef, delta, k);
        let synth = blind_deconv::lift_apply_rank1(&model, &h0, &x0);
        let e = norm(&(&synth - &model.y)) / norm(&model.y).max(1.0);
        println!("k={k}: rel={e:.3e} |y|={:.3}", norm(&model.y));
    }
}
