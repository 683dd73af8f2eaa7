#include "slidemil/vit.hpp"

#include <cmath>

#include "slidemil/checkpoint.hpp"
#include "slidemil/errors.hpp"

namespace slidemil {

void ViTConfig::validate() const {
    if (image_size == 0 || patch_size == 0 || embed_dim == 0 || num_blocks == 0 ||
        num_heads == 0 || mlp_hidden == 0 || channels == 0)
        throw ValidationError("vit config extents must all be >= 1");
    if (image_size % patch_size != 0)
        throw ValidationError("image_size " + std::to_string(image_size) +
                              " not divisible by patch_size " + std::to_string(patch_size));
    if (embed_dim % num_heads != 0)
        throw ValidationError("embed_dim " + std::to_string(embed_dim) +
                              " not divisible by num_heads " + std::to_string(num_heads));
}

nlohmann::json ViTConfig::to_json() const {
    return {{"image_size", image_size}, {"patch_size", patch_size}, {"embed_dim", embed_dim},
            {"num_blocks", num_blocks}, {"num_heads", num_heads},   {"mlp_hidden", mlp_hidden},
            {"channels", channels}};
}

ViTConfig ViTConfig::from_json(const nlohmann::json& j) {
    ViTConfig c;
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.validate();
    return c;
}

ViTConfig ViTConfig::desk() { return ViTConfig{}; }

ViTConfig ViTConfig::vit_b16() {
    ViTConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.embed_dim = 768;
    c.num_blocks = 12;
    c.num_heads = 12;
    c.mlp_hidden = 3072;
    return c;
}

std::vector<Tensor*> ViTModel::parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ViTModel::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("patch_proj", &patch_proj);
    out.emplace_back("patch_bias", &patch_bias);
    out.emplace_back("cls_token", &cls_token);
    out.emplace_back("pos_embed", &pos_embed);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string p = "blocks." + std::to_string(b) + ".";
        EncoderBlock& blk = blocks[b];
        out.emplace_back(p + "ln1_gamma", &blk.ln1_gamma);
        out.emplace_back(p + "ln1_beta", &blk.ln1_beta);
        for (std::size_t h = 0; h < blk.heads.size(); ++h) {
            const std::string hp = p + "heads." + std::to_string(h) + ".";
            AttentionHead& head = blk.heads[h];
            out.emplace_back(hp + "wq", &head.wq);
            out.emplace_back(hp + "wk", &head.wk);
            out.emplace_back(hp + "wv", &head.wv);
            out.emplace_back(hp + "bq", &head.bq);
            out.emplace_back(hp + "bk", &head.bk);
            out.emplace_back(hp + "bv", &head.bv);
            out.emplace_back(hp + "wo", &head.wo);
        }
        out.emplace_back(p + "attn_bias", &blk.attn_bias);
        out.emplace_back(p + "ln2_gamma", &blk.ln2_gamma);
        out.emplace_back(p + "ln2_beta", &blk.ln2_beta);
        out.emplace_back(p + "mlp_w1", &blk.mlp_w1);
        out.emplace_back(p + "mlp_b1", &blk.mlp_b1);
        out.emplace_back(p + "mlp_w2", &blk.mlp_w2);
        out.emplace_back(p + "mlp_b2", &blk.mlp_b2);
    }
    return out;
}

void ViTModel::set_requires_grad(bool v) {
    for (Tensor* t : parameters()) t->requires_grad = v;
}

ViTModel make_vit(const ViTConfig& config, Rng& rng) {
    config.validate();
    const std::size_t D = config.embed_dim, dh = config.head_dim();
    ViTModel m;
    m.config = config;
    const double std0 = 0.02;
    m.patch_proj = Tensor::randn({config.patch_dim(), D}, rng, std0);
    m.patch_bias = Tensor::zeros({D});
    m.cls_token = Tensor::randn({1, D}, rng, std0);
    m.pos_embed = Tensor::randn({config.tokens() + 1, D}, rng, std0);
    m.blocks.resize(config.num_blocks);
    for (auto& blk : m.blocks) {
        blk.ln1_gamma = Tensor::full({D}, 1.0);
        blk.ln1_beta = Tensor::zeros({D});
        blk.heads.resize(config.num_heads);
        for (auto& head : blk.heads) {
            head.wq = Tensor::randn({D, dh}, rng, std0);
            head.wk = Tensor::randn({D, dh}, rng, std0);
            head.wv = Tensor::randn({D, dh}, rng, std0);
            head.bq = Tensor::zeros({dh});
            head.bk = Tensor::zeros({dh});
            head.bv = Tensor::zeros({dh});
            head.wo = Tensor::randn({dh, D}, rng, std0);
        }
        blk.attn_bias = Tensor::zeros({D});
        blk.ln2_gamma = Tensor::full({D}, 1.0);
        blk.ln2_beta = Tensor::zeros({D});
        blk.mlp_w1 = Tensor::randn({D, config.mlp_hidden}, rng, std0);
        blk.mlp_b1 = Tensor::zeros({config.mlp_hidden});
        blk.mlp_w2 = Tensor::randn({config.mlp_hidden, D}, rng, std0);
        blk.mlp_b2 = Tensor::zeros({D});
    }
    m.set_requires_grad(true);
    return m;
}

void vit_to_checkpoint(const std::filesystem::path& path, ViTModel& model,
                       const nlohmann::json& extra_config) {
    Checkpoint ckpt;
    ckpt.kind = "vit";
    ckpt.config = model.config.to_json();
    if (!extra_config.is_null())
        for (auto& [k, v] : extra_config.items()) ckpt.config[k] = v;
    for (auto& [name, t] : model.named_parameters()) ckpt.blobs.emplace_back(name, *t);
    save_checkpoint(path, ckpt);
}

ViTModel vit_from_checkpoint(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.kind != "vit")
        throw ValidationError(path.string() + " holds a '" + ckpt.kind +
                              "' checkpoint, expected 'vit'");
    Rng rng(0);
    ViTModel m = make_vit(ViTConfig::from_json(ckpt.config), rng);
    auto named = m.named_parameters();
    if (named.size() != ckpt.blobs.size())
        throw ValidationError(path.string() + ": blob count " +
                              std::to_string(ckpt.blobs.size()) + " does not match model (" +
                              std::to_string(named.size()) + ")");
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto& [name, param] = named[i];
        auto& [bname, blob] = ckpt.blobs[i];
        if (name != bname)
            throw ValidationError(path.string() + ": blob '" + bname + "' where '" + name +
                                  "' expected");
        if (blob.shape() != param->shape())
            throw DimensionError(path.string() + ": blob '" + name + "' has shape " +
                                 blob.shape_str() + ", expected " + param->shape_str());
        blob.requires_grad = param->requires_grad;
        *param = blob;
    }
    return m;
}

Tensor patches_matrix(const ImageF& image, const ViTConfig& config) {
    if (image.height != config.image_size || image.width != config.image_size)
        throw DimensionError("image is " + std::to_string(image.height) + "x" +
                             std::to_string(image.width) + ", config expects " +
                             std::to_string(config.image_size) + "x" +
                             std::to_string(config.image_size));
    if (image.channels != config.channels)
        throw DimensionError("image has " + std::to_string(image.channels) +
                             " channels, config expects " + std::to_string(config.channels));
    const std::size_t P = config.patch_size;
    const std::size_t per_side = config.image_size / P;
    Tensor xp({config.tokens(), config.patch_dim()});
    std::size_t row = 0;
    for (std::size_t gy = 0; gy < per_side; ++gy)
        for (std::size_t gx = 0; gx < per_side; ++gx, ++row) {
            std::size_t col = 0;
            for (std::size_t c = 0; c < config.channels; ++c)
                for (std::size_t y = 0; y < P; ++y)
                    for (std::size_t x = 0; x < P; ++x, ++col)
                        xp.at(row, col) = image.at(c, gy * P + y, gx * P + x);
        }
    return xp;
}

NodeId tokenize(Tape& tape, const Binding& bound, const ViTModel& model, const ImageF& image) {
    Tensor xp = patches_matrix(image, model.config);
    NodeId projected =
        tape.add_row(tape.matmul(tape.constant(std::move(xp)), bound(model.patch_proj)),
                     bound(model.patch_bias));
    NodeId tokens = tape.concat_rows(bound(model.cls_token), projected);
    return tape.add(tokens, bound(model.pos_embed));
}

NodeId encoder_block(Tape& tape, const Binding& bound, const EncoderBlock& block, NodeId tokens,
                     std::size_t head_dim, std::vector<NodeId>* attention_out) {
    constexpr double ln_eps = 1e-6;
    // pre-norm: x <- x + MSA(LN(x)); x <- x + MLP(LN(x))
    NodeId normed = tape.layer_norm(tokens, bound(block.ln1_gamma), bound(block.ln1_beta), ln_eps);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    NodeId msa = 0;
    bool first = true;
    for (const AttentionHead& head : block.heads) {
        NodeId q = tape.add_row(tape.matmul(normed, bound(head.wq)), bound(head.bq));
        NodeId k = tape.add_row(tape.matmul(normed, bound(head.wk)), bound(head.bk));
        NodeId v = tape.add_row(tape.matmul(normed, bound(head.wv)), bound(head.bv));
        NodeId attn = tape.softmax(tape.scale(tape.matmul(q, tape.transpose(k)), att_scale), 1.0);
        if (attention_out) attention_out->push_back(attn);
        NodeId ctx = tape.matmul(tape.matmul(attn, v), bound(head.wo));
        msa = first ? ctx : tape.add(msa, ctx);
        first = false;
    }
    msa = tape.add_row(msa, bound(block.attn_bias));
    NodeId x = tape.add(tokens, msa);

    NodeId normed2 = tape.layer_norm(x, bound(block.ln2_gamma), bound(block.ln2_beta), ln_eps);
    NodeId h = tape.gelu(tape.add_row(tape.matmul(normed2, bound(block.mlp_w1)), bound(block.mlp_b1)));
    NodeId mlp = tape.add_row(tape.matmul(h, bound(block.mlp_w2)), bound(block.mlp_b2));
    return tape.add(x, mlp);
}

ViTForward vit_forward(Tape& tape, const Binding& bound, const ViTModel& model,
                       const ImageF& image) {
    ViTForward fwd;
    NodeId x = tokenize(tape, bound, model, image);
    fwd.attention.resize(model.blocks.size());
    for (std::size_t b = 0; b < model.blocks.size(); ++b) {
        x = encoder_block(tape, bound, model.blocks[b], x, model.config.head_dim(),
                          &fwd.attention[b]);
        fwd.cls_rows.push_back(tape.take_row(x, 0));
    }
    fwd.tokens = x;
    return fwd;
}

NodeId extract_features_node(Tape& tape, const ViTForward& fwd, std::size_t k_last,
                             std::size_t embed_dim) {
    const std::size_t L = fwd.cls_rows.size();
    if (k_last == 0 || k_last > L)
        throw ValidationError("k_last must be in [1, " + std::to_string(L) + "], got " +
                              std::to_string(k_last));
    NodeId stacked = fwd.cls_rows[L - k_last];
    NodeId mean = stacked;
    for (std::size_t i = L - k_last + 1; i < L; ++i) {
        stacked = tape.concat_rows(stacked, fwd.cls_rows[i]);
        mean = tape.add(mean, fwd.cls_rows[i]);
    }
    mean = tape.scale(mean, 1.0 / static_cast<double>(k_last));
    stacked = tape.concat_rows(stacked, mean);
    return tape.reshape(stacked, {1, (k_last + 1) * embed_dim});
}

std::vector<double> extract_features(const ViTModel& model, const ImageF& image,
                                     std::size_t k_last) {
    Tape tape;
    Binding bound(tape, const_cast<ViTModel&>(model).parameters(), /*frozen=*/true);
    ViTForward fwd = vit_forward(tape, bound, model, image);
    NodeId feat = extract_features_node(tape, fwd, k_last, model.config.embed_dim);
    return tape.value(feat).vec();
}

}  // namespace slidemil
