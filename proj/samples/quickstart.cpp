// Generates a small two-vs-three-cluster dataset, embeds it, and trains a
// GNN-ESR classifier on two thirds of it.

#include <cstdio>
#include <vector>

#include "gnn_esr/gnn_esr.hpp"

using namespace gnn_esr;

int main() {
  const std::uint64_t seed = 11;
  LabeledGraphDataset ds = gen_dataset(TaskId::TwoThree, 90, seed);
  std::vector<Matrix> embeddings = embed_dataset(ds, EmbeddingConfig{}, seed, 1);

  ModelConfig mc;
  mc.num_classes = ds.num_classes;
  mc.feature_width = 1;

  std::vector<GraphSample> samples;
  for (Index i = 0; i < ds.size(); ++i)
    samples.push_back(prepare_sample(ds.graphs[i], node_features(ds.graphs[i], ds.label_alphabet), &embeddings[i],
                                     ds.class_labels[i], mc, derive_seed(seed, i)));

  std::vector<const GraphSample*> train, test;
  for (Index i = 0; i < samples.size(); ++i) (i % 3 == 0 ? test : train).push_back(&samples[i]);

  TrainConfig tc;
  tc.epochs = 30;
  tc.decay_epoch = 20;
  TrainResult r = train_fold(mc, train, tc, seed, [](Index epoch, double loss) {
    if (epoch % 10 == 0) std::printf("epoch %3zu  loss %.4f\n", epoch, loss);
  });
  std::printf("test accuracy: %.3f\n", evaluate(r.model, test));
}
