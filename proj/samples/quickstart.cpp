// Train on a synthetic corpus with the stub backbone, then score one image
// zero-shot and with a 4-shot memory bank.
#include <cstdio>

#include "afclip/afclip.hpp"

int main() {
  using namespace afclip;
  const StubBackbone backbone;
  const auto corpus = make_textured_squares({64, 64, 0.5, 7});

  std::vector<TrainingExample> data;
  for (const auto& s : corpus) data.push_back({s.image, s.mask, s.label});

  ModelConfig model_config;
  model_config.score.output_size = 0;  // pixel map at the backbone input size
  model_config.score.smooth_sigma = 1.0;
  model_config.adapter_heads = 8;
  TrainConfig train_config;
  train_config.image_size = backbone.spec().input_size;
  train_config.learning_rate = 6e-3;
  train_config.batch_size = 16;
  train_config.epochs = 50;

  const auto result = train(backbone, data, model_config, {}, train_config, "squares", [](const StepRecord& r) {
    if (r.step % 25 == 0) std::printf("step %d loss %.4f\n", r.step, r.total);
  });
  const auto model = model_from_checkpoint(result.checkpoint, backbone);

  std::vector<Image> shots;
  for (const auto& s : corpus)
    if (s.label == 0 && shots.size() < 4) shots.push_back(s.image);
  const auto banks = build_banks(shots, model, "squares");

  const auto test = make_textured_squares({4, 64, 1.0, 123});
  for (const auto& s : test) {
    const auto zs = model.infer(s.image);
    const auto fs = fewshot_infer(s.image, model, banks, {});
    std::printf("defective image: zero-shot %.3f, 4-shot %.3f, map peak %.3f\n", zs.image_score, fs.image_score,
                fs.pixel_map.maxCoeff());
  }
  const auto normal = make_textured_squares({1, 64, 0.0, 124}).front();
  std::printf("normal image:    zero-shot %.3f, 4-shot %.3f\n", model.infer(normal.image).image_score,
              fewshot_infer(normal.image, model, banks, {}).image_score);
}
