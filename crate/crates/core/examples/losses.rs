//! Evaluate every term of the generator and discriminator objectives on a
//! synthetic prediction.

use liquidwarp::flow::decompose;
use liquidwarp::objectives::{
    adversarial_loss_d, adversarial_loss_g, attention_reg_loss, face_identity_loss, perceptual_loss,
    total_generator_loss, ConvStack, FaceBox, GeneratorTerms, LossWeights, Reduction, ScoreMap,
};
use liquidwarp::pipeline::{head_face_box, Resolution};
use liquidwarp::synthetic;

fn main() -> liquidwarp::Result<()> {
    let size = Resolution::new(128, 128)?;
    let model = synthetic::humanoid();
    let (src, reference) = synthetic::params_pair(5);
    let source = synthetic::render(&model, &src, size.width, size.height)?;
    let target = synthetic::render(&model, &reference, size.width, size.height)?;

    // A "prediction" that is the truth with a little structured noise.
    let noisy = target.image.map(|v| (v * 0.9 + 0.05).clamp(-1.0, 1.0));
    let toy = ConvStack::toy();
    let face: FaceBox = head_face_box(&model, &reference, size)?;

    let perceptual = perceptual_loss(&toy, &source.image, &source.image, &noisy, &target.image, Reduction::Mean)?;
    let face_term = face_identity_loss(&toy, &noisy, &target.image, &face, Reduction::Mean)?;
    let sil_s = decompose(&source.image, &source.map)?.mask.to_feature_map();
    let sil_t = decompose(&target.image, &target.map)?.mask.to_feature_map();
    let attention = attention_reg_loss(&sil_s, &sil_s, &sil_t.map(|v| v * 0.8), &sil_t, Reduction::Mean)?;
    let fake = ScoreMap::filled(14, 14, 0.3)?;
    let real = ScoreMap::filled(14, 14, 0.7)?;

    let terms = GeneratorTerms {
        perceptual,
        face: face_term,
        attention,
        adversarial: adversarial_loss_g(&fake, Reduction::Mean),
    };
    println!("face box: {face:?}");
    println!("{terms:#?}");
    println!("generator total: {:.5}", total_generator_loss(&LossWeights::default(), &terms));
    println!("discriminator: {:.5}", adversarial_loss_d(&fake, &real, Reduction::Mean));
    Ok(())
}
