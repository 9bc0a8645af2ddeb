#pragma once

#include "voiceguard/adversary.hpp"
#include "voiceguard/asr_client.hpp"
#include "voiceguard/config.hpp"
#include "voiceguard/corpus.hpp"
#include "voiceguard/error.hpp"
#include "voiceguard/fft.hpp"
#include "voiceguard/filter.hpp"
#include "voiceguard/matrix.hpp"
#include "voiceguard/mel.hpp"
#include "voiceguard/metrics.hpp"
#include "voiceguard/objectives.hpp"
#include "voiceguard/parallel.hpp"
#include "voiceguard/pipeline.hpp"
#include "voiceguard/protector.hpp"
#include "voiceguard/report.hpp"
#include "voiceguard/resample.hpp"
#include "voiceguard/stft.hpp"
#include "voiceguard/stoi.hpp"
#include "voiceguard/surrogate.hpp"
#include "voiceguard/wav.hpp"
#include "voiceguard/waveform.hpp"
