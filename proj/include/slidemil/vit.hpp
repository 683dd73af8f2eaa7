#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "slidemil/image.hpp"
#include "slidemil/tensor.hpp"

namespace slidemil {

struct ViTConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 8;
    std::size_t embed_dim = 16;    // D
    std::size_t num_blocks = 4;    // L
    std::size_t num_heads = 2;
    std::size_t mlp_hidden = 64;
    std::size_t channels = 3;

    std::size_t tokens() const {  // N = HW / P^2
        return (image_size / patch_size) * (image_size / patch_size);
    }
    std::size_t head_dim() const { return embed_dim / num_heads; }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }

    void validate() const;
    nlohmann::json to_json() const;
    static ViTConfig from_json(const nlohmann::json& j);

    static ViTConfig desk();     // tiny config for experiments and tests
    static ViTConfig vit_b16();  // ViT-B/16: 224px, D=768, L=12, 12 heads
};

struct AttentionHead {
    Tensor wq, wk, wv;  // D x head_dim
    Tensor bq, bk, bv;  // head_dim
    Tensor wo;          // head_dim x D
};

struct EncoderBlock {
    Tensor ln1_gamma, ln1_beta;
    std::vector<AttentionHead> heads;
    Tensor attn_bias;  // D, shared output-projection bias
    Tensor ln2_gamma, ln2_beta;
    Tensor mlp_w1, mlp_b1;  // D x hidden, hidden
    Tensor mlp_w2, mlp_b2;  // hidden x D, D
};

struct ViTModel {
    ViTConfig config;
    Tensor patch_proj;  // patch_dim x D
    Tensor patch_bias;  // D
    Tensor cls_token;   // 1 x D
    Tensor pos_embed;   // (N+1) x D
    std::vector<EncoderBlock> blocks;

    std::vector<Tensor*> parameters();
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    void set_requires_grad(bool v);
};

// Weights from N(0, 0.02), biases zero, layer-norm affine identity.
ViTModel make_vit(const ViTConfig& config, Rng& rng);

ViTModel vit_from_checkpoint(const std::filesystem::path& path);
void vit_to_checkpoint(const std::filesystem::path& path, ViTModel& model,
                       const nlohmann::json& extra_config = {});

// Rows of X_p: sub-patches in row-major grid order, each flattened
// channel-major. Pixel values are the raw [0,1] floats.
Tensor patches_matrix(const ImageF& image, const ViTConfig& config);

struct ViTForward {
    std::vector<NodeId> cls_rows;       // [cls] row after each block, 1 x D
    NodeId tokens;                      // final (N+1) x D
    std::vector<std::vector<NodeId>> attention;  // per block, per head: (N+1) x (N+1)
};

// tokenize: split/flatten/project, prepend [cls], add positional embeddings.
NodeId tokenize(Tape& tape, const Binding& bound, const ViTModel& model, const ImageF& image);

NodeId encoder_block(Tape& tape, const Binding& bound, const EncoderBlock& block, NodeId tokens,
                     std::size_t head_dim, std::vector<NodeId>* attention_out = nullptr);

ViTForward vit_forward(Tape& tape, const Binding& bound, const ViTModel& model,
                       const ImageF& image);

// Concatenates the [cls] rows of the last k_last blocks (ascending block
// order) and appends their elementwise average: 1 x (k_last+1)*D.
NodeId extract_features_node(Tape& tape, const ViTForward& fwd, std::size_t k_last,
                             std::size_t embed_dim);

// Frozen-weights convenience path: no gradients recorded.
std::vector<double> extract_features(const ViTModel& model, const ImageF& image,
                                     std::size_t k_last);

}  // namespace slidemil
