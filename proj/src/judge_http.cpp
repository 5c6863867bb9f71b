#include "forge/common/errors.hpp"
#include "forge/judge.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

namespace forge {

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

HttpChatJudge::HttpChatJudge(HttpJudgeOptions opts) : opts_(std::move(opts)) {}

std::string HttpChatJudge::id() const { return "http-" + opts_.model; }

json HttpChatJudge::build_body(const JudgePrompt& prompt, const std::vector<ImageRef>& images) const {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt.rendered_text}});
    for (const auto& img : images) {
        std::ifstream in(img.path, std::ios::binary);
        if (!in) throw BackendError("http judge: cannot read image " + img.path.string());
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const std::string ext = img.path.extension().string();
        const std::string mime = (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png";
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + mime + ";base64," + base64_encode(bytes)}}}});
    }
    return json{{"model", opts_.model},
                {"max_tokens", prompt.max_tokens},
                {"temperature", 0},
                {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
}

std::string HttpChatJudge::extract_content(const json& response) {
    try {
        const auto& msg = response.at("choices").at(0).at("message").at("content");
        if (msg.is_string()) return msg.get<std::string>();
        // Some servers return content parts.
        std::string text;
        for (const auto& part : msg) {
            if (part.value("type", "") == "text") text += part.value("text", "");
        }
        return text;
    } catch (const json::exception& e) {
        throw BackendError(std::string("http judge: malformed response: ") + e.what());
    }
}

std::string HttpChatJudge::send(const JudgePrompt& prompt, const std::vector<ImageRef>& images) {
    httplib::Client client(opts_.base_url);
    client.set_read_timeout(opts_.timeout_s, 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv(opts_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = build_body(prompt, images).dump();
    auto res = client.Post(opts_.path, headers, body, "application/json");
    if (!res) throw BackendError("http judge: " + httplib::to_string(res.error()));
    if (res->status != 200) {
        throw BackendError("http judge: status " + std::to_string(res->status));
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("http judge: non-JSON body: ") + e.what());
    }
    return extract_content(parsed);
}

} // namespace forge
