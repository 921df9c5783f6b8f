//! Aggregate feature pyramids from several sources into one target stream,
//! then blend a color map over a background with an attention map.

use liquidwarp::body::BodyParams;
use liquidwarp::flow::flow_for_imitation;
use liquidwarp::objectives::{ConvStack, FeatureExtractor};
use liquidwarp::synthetic;
use liquidwarp::tensor::FeatureMap;
use liquidwarp::warp::{compose_output, lwb_aggregate, resize_bilinear, AttentionPair};

fn main() -> liquidwarp::Result<()> {
    let size = 128;
    let model = synthetic::humanoid();
    let (_, reference) = synthetic::params_pair(20);
    let toy = ConvStack::toy();

    // Two source views of the subject, each warped into the reference pose.
    let sources: Vec<BodyParams> = (21..23).map(|s| synthetic::params_pair(s).0).collect();
    let mut pyramids = Vec::new();
    let mut flows = Vec::new();
    for src in &sources {
        let image = synthetic::render(&model, src, size, size)?.image;
        pyramids.push(toy.extract(&image)?);
        flows.push(flow_for_imitation(&model, src, &reference, size, size)?.flow);
    }

    let target_image = synthetic::render(&model, &reference, size, size)?.image;
    for (level, target) in toy.extract(&target_image)?.iter().enumerate() {
        let (h, w) = (target.height(), target.width());
        // Flows are resampled to each level's resolution by warping their coordinates.
        let level_flows: Vec<_> = flows.iter().map(|f| downsample_flow(f, w, h)).collect::<liquidwarp::Result<_>>()?;
        let pairs: Vec<_> = pyramids.iter().map(|p| &p[level]).zip(&level_flows).collect();
        let fused = lwb_aggregate(&pairs, target)?;
        let energy: f64 = fused.data().iter().map(|v| (*v as f64).abs()).sum::<f64>() / fused.data().len() as f64;
        println!("level {level}: {:?} mean |fused| {energy:.4}", fused.shape());
    }

    let color = FeatureMap::filled(3, size, size, 0.8);
    let attention = resize_bilinear(&FeatureMap::from_fn(1, 2, 2, |_, y, x| (x + y) as f32 / 2.0), size, size);
    let blended = compose_output(&AttentionPair::new(attention, color)?, &target_image)?;
    println!("blended output {:?}", blended.shape());
    Ok(())
}

fn downsample_flow(
    flow: &liquidwarp::flow::TransformFlow,
    width: usize,
    height: usize,
) -> liquidwarp::Result<liquidwarp::flow::TransformFlow> {
    let as_map = FeatureMap::from_fn(3, flow.height(), flow.width(), |c, y, x| match (c, flow.get(x, y)) {
        (0, Some(p)) => p[0] as f32,
        (1, Some(p)) => p[1] as f32,
        (2, Some(_)) => 1.0,
        _ => 0.0,
    });
    let small = resize_bilinear(&as_map, width, height);
    let coords = (0..width * height)
        .map(|i| {
            let (x, y) = (i % width, i / width);
            (small.get(2, y, x) > 0.999).then(|| [small.get(0, y, x) as f64, small.get(1, y, x) as f64])
        })
        .collect();
    liquidwarp::flow::TransformFlow::from_coords(width, height, coords)
}
