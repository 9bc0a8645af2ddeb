#include <gtest/gtest.h>

#include <voiceguard/asr_client.hpp>
#include <voiceguard/config.hpp>
#include <voiceguard/corpus.hpp>
#include <voiceguard/wav.hpp>

#include <filesystem>
#include <fstream>
#include <thread>

using namespace voiceguard;

namespace {

std::filesystem::path temp(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "vg_cli_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Wav, RoundTripIsWithinOneQuantum) {
  const Waveform x = synth_clip(0, 0, 1.0).audio;
  const auto p = temp("rt.wav");
  save_wav(x, p);
  const Waveform y = load_wav(p);
  ASSERT_EQ(y.size(), x.size());
  EXPECT_EQ(y.sample_rate, 16000);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y.samples[i] - x.samples[i]), 1.0 / 32768.0);
}

TEST(Wav, OneSecondAtSixteenKilohertzIs16000Samples) {
  const auto p = temp("one.wav");
  save_wav(make_waveform(std::vector<double>(16000, 0.1)), p);
  AudioFileRecord rec;
  const Waveform y = load_wav(p, &rec);
  EXPECT_EQ(y.size(), 16000u);
  EXPECT_DOUBLE_EQ(rec.duration_s, 1.0);
  EXPECT_EQ(rec.sample_rate, 16000);
}

TEST(Wav, OtherRatesAreResampledOnLoad) {
  const auto p = temp("r8k.wav");
  save_wav(make_waveform(std::vector<double>(8000, 0.0), 8000), p);
  EXPECT_EQ(load_wav(p).size(), 16000u);
}

TEST(Wav, TruncatedStereoAndNonPcmAreRejected) {
  const std::string good = encode_wav(make_waveform(std::vector<double>(100, 0.2)));
  EXPECT_EQ(kind_of([&] { decode_wav(good.substr(0, good.size() - 3)); }), ErrorKind::MalformedFile);
  EXPECT_EQ(kind_of([&] { decode_wav("RIFF"); }), ErrorKind::MalformedFile);
  std::string stereo = good;
  stereo[22] = 2;
  EXPECT_EQ(kind_of([&] { decode_wav(stereo); }), ErrorKind::MalformedFile);
  std::string floaty = good;
  floaty[20] = 3;
  EXPECT_EQ(kind_of([&] { decode_wav(floaty); }), ErrorKind::MalformedFile);
  EXPECT_EQ(kind_of([&] { load_wav(temp("missing.wav")); }), ErrorKind::Io);
}

TEST(Wav, OutOfRangeSamplesSaturate) {
  const Waveform y = decode_wav(encode_wav(make_waveform({2.0, -2.0, 1.0})));
  EXPECT_EQ(y.samples[0], 32767.0 / 32768.0);
  EXPECT_EQ(y.samples[1], -1.0);
  EXPECT_EQ(y.samples[2], 32767.0 / 32768.0);
}

TEST(Rational, FractionsKeepExactForm) {
  const Rational r = parse_rational("8/255");
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.num, 8);
  EXPECT_EQ(r.den, 255);
  EXPECT_DOUBLE_EQ(r.value(), 8.0 / 255.0);
  EXPECT_EQ(r.str(), "8/255");
  EXPECT_EQ(parse_rational(" 3 ").str(), "3");
  EXPECT_DOUBLE_EQ(parse_rational("0.05").value(), 0.05);
  for (const char* bad : {"8/0", "x", "1/", "", "nan", "1/2/3"})
    EXPECT_EQ(kind_of([&] { parse_rational(bad); }), ErrorKind::Usage) << bad;
}

TEST(Config, FlagBeatsFileBeatsDefault) {
  const auto p = temp("cfg.conf");
  std::ofstream(p) << "# comment\nalpha = 0.1\nbeta = 20  # trailing\n";
  ConfigStore s;
  s.set("alpha", "0.5", ConfigSource::Flag);
  s.load_file(p);
  EXPECT_EQ(s.get("alpha"), "0.5");
  EXPECT_EQ(s.source("alpha"), ConfigSource::Flag);
  EXPECT_EQ(s.get("beta"), "20");
  EXPECT_EQ(s.source("beta"), ConfigSource::File);
  EXPECT_EQ(s.get("epsilon"), "8/255");
  EXPECT_EQ(s.source("epsilon"), ConfigSource::Default);
  const std::string d = s.dump();
  EXPECT_NE(d.find("alpha = 0.5 (flag)"), std::string::npos);
  EXPECT_NE(d.find("beta = 20 (file)"), std::string::npos);
  EXPECT_NE(d.find("epsilon = 8/255 (default)"), std::string::npos);
  const CliConfig c = resolve(s);
  EXPECT_DOUBLE_EQ(c.alpha, 0.5);
  EXPECT_DOUBLE_EQ(c.beta, 20.0);
  EXPECT_EQ(c.epsilon.str(), "8/255");
}

TEST(Config, BadInputIsAUsageError) {
  EXPECT_EQ(kind_of([] { ConfigStore().set("nope", "1", ConfigSource::Flag); }), ErrorKind::Usage);
  const auto p = temp("bad.conf");
  std::ofstream(p) << "alpha 0.1\n";
  EXPECT_EQ(kind_of([&] { ConfigStore().load_file(p); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([] { ConfigStore().load_file(temp("none.conf")); }), ErrorKind::Io);
  const std::vector<std::pair<std::string, std::string>> bad{
      {"epsilon", "2"}, {"mode", "loud"}, {"max_epoch", "1.5"}, {"perception", "maybe"}, {"alpha", "-1"}};
  for (const auto& [k, v] : bad) {
    ConfigStore s;
    s.set(k, v, ConfigSource::Flag);
    EXPECT_EQ(kind_of([&] { resolve(s); }), ErrorKind::Usage) << k << "=" << v;
  }
}

TEST(AsrClient, ReadsTranscriptFromServer) {
  httplib::Server srv;
  std::size_t received = 0;
  srv.Post("/transcribe", [&](const httplib::Request& req, httplib::Response& res) {
    received = decode_wav(req.body).size();
    res.set_content(R"({"text": "a b d"})", "application/json");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  AsrClient client({"http://127.0.0.1:" + std::to_string(port), 5.0});
  const Waveform x = make_waveform(std::vector<double>(1600, 0.1));
  const auto text = client.transcribe(x);
  srv.stop();
  t.join();
  ASSERT_TRUE(text.has_value());
  EXPECT_EQ(*text, "a b d");
  EXPECT_EQ(received, 1600u);
}

TEST(AsrClient, BadReplyOrNoServerMeansUnavailable) {
  httplib::Server srv;
  srv.Post("/transcribe", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  const Waveform x = make_waveform(std::vector<double>(160, 0.1));
  const auto bad = AsrClient({"http://127.0.0.1:" + std::to_string(port), 5.0}).transcribe(x);
  srv.stop();
  t.join();
  EXPECT_FALSE(bad.has_value());
  // Port 1 on loopback refuses connections.
  EXPECT_FALSE(AsrClient({"http://127.0.0.1:1", 1.0}).transcribe(x).has_value());
  EXPECT_FALSE(AsrClient({}).transcribe(x).has_value());
  EXPECT_FALSE(wer_via_asr(x, "a", AsrClient({})).has_value());
}
