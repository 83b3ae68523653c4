#pragma once

#include "obqa/extractor/checkpoint.hpp"
#include "obqa/extractor/config.hpp"
#include "obqa/extractor/encoder.hpp"
#include "obqa/extractor/heads.hpp"
#include "obqa/extractor/params.hpp"
#include "obqa/extractor/training.hpp"
