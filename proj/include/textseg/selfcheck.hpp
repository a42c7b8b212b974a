// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "textseg/gradcheck.hpp"
#include "textseg/model.hpp"
#include "textseg/vocab.hpp"

namespace textseg {

// Finite-difference sweep of the complete objective on the micro model
// (4 patches, 3 token slots, width 8), every parameter element checked. The
// first build records the stop-gradient snapshots (reconstruction targets,
// loss weights, mask draws); every probe replays them, so the finite
// differences measure the same function the analytic gradient descends.
inline GradcheckResult objective_gradcheck(size_t batch_size = 1, double h = kGradcheckStep) {
  RunConfig cfg;
  cfg.batch_size = batch_size;
  ModelDims dm = ModelDims::micro();
  auto vocab = Vocabulary::builtin();
  Model<double> model(dm, cfg, vocab.size());

  Rng rng(12345);
  std::vector<Sample<double>> batch;
  for (size_t b = 0; b < batch_size; ++b) {
    Sample<double> s;
    size_t px = dm.image * dm.image;
    std::vector<double> img(px), tgt(px);
    for (auto& x : img) x = rng.uniform();
    for (auto& x : tgt) x = rng.uniform() < 0.25 ? 1.0 : 0.0;
    s.image = Tensor<double>::constant({1, dm.image, dm.image}, std::move(img));
    s.target = Tensor<double>::constant({1, dm.image, dm.image}, std::move(tgt));
    if (b % 2 == 0) {
      s.ids = {4, 6, 8};  // three real tokens
      s.keep = {1, 1, 1};
    } else {
      s.ids = {5, 9, kPadId};  // trailing pad exercises the keep-mask paths
      s.keep = {1, 1, 0};
    }
    s.id = "probe" + std::to_string(b);
    batch.push_back(std::move(s));
  }

  std::optional<TrainAux<double>> frozen;
  auto make_loss = [&]() {
    auto out = model.forward_train(batch, 777, frozen ? &*frozen : nullptr);
    if (!frozen) frozen = out.aux;
    return out.total;
  };
  return gradcheck(make_loss, model.params().items(), h);
}

}  // namespace textseg
