#pragma once

#include "caemb/common.hpp"
#include "caemb/corpus.hpp"
#include "caemb/sparse_io.hpp"
#include "caemb/cooccur.hpp"
#include "caemb/transforms.hpp"
#include "caemb/factorize.hpp"
#include "caemb/eval.hpp"
#include "caemb/diagnostics.hpp"
#include "caemb/pipeline.hpp"
