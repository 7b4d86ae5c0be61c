use visnav::image::GrayImage;
use visnav::tracking::Segment;

/// Burns `segments` into `image` at `value`, clipped to the frame.
pub fn draw_segments(image: &mut GrayImage, segments: &[Segment], value: u8) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    for seg in segments {
        let steps = seg.length().ceil().max(1.0) as usize * 2;
        for i in 0..=steps {
            let f = i as f64 / steps as f64;
            let x = (seg.a.0 + f * (seg.b.0 - seg.a.0)).round() as i64;
            let y = (seg.a.1 + f * (seg.b.1 - seg.a.1)).round() as i64;
            if (0..w).contains(&x) && (0..h).contains(&y) {
                image.set(x as usize, y as usize, value);
            }
        }
    }
}
